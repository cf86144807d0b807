"""
Reading experiment files: INI-style text with named sections and ``key = value`` lines.
Parsing only splits the text into sections; validation lives in the serializers.
"""
import configparser
import re
from pathlib import Path

from django.utils.translation import gettext_lazy as _

from sgm_lab.exceptions import ConfigError

SECTIONS = ("experiment", "problem", "geometry", "step", "checks")
REQUIRED_SECTIONS = ("experiment", "problem", "step")

SECTION_RE = re.compile(r"^\s*\[(?P<name>[^\]]+)\]")
KEY_RE = re.compile(r"^(?P<key>[^\s=:#;\[][^=:]*?)\s*[=:]")


class ParsedConfig:
    """Raw section dictionaries plus the line every key was read from."""

    def __init__(self, sections, lines, source=None):
        self.sections = sections
        self.lines = lines
        self.source = source

    def section(self, name):
        return dict(self.sections.get(name, {}))

    def has_section(self, name):
        return name in self.sections

    def line_of(self, section, key=None):
        return self.lines.get((section, key)) or self.lines.get((section, None))


def _line_map(text):
    lines, current = {}, None
    for number, line in enumerate(text.splitlines(), start=1):
        header = SECTION_RE.match(line)
        if header:
            current = header.group("name").strip()
            lines.setdefault((current, None), number)
            continue
        match = KEY_RE.match(line)
        if match and current is not None:
            lines.setdefault((current, match.group("key").strip().lower()), number)
    return lines


def parse_config_text(text, source=None):
    parser = configparser.ConfigParser(
        strict=True,
        interpolation=None,
        inline_comment_prefixes=("#",),
        empty_lines_in_values=False,
    )
    try:
        parser.read_string(text, source=str(source or "<config>"))
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(_("Duplicate section."), section=exc.section, line=exc.lineno)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(_("Duplicate key."), section=exc.section, key=exc.option, line=exc.lineno)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(_("Expected a [section] header before the first key."), line=exc.lineno)
    except configparser.ParsingError as exc:
        line, content = exc.errors[0]
        raise ConfigError(
            _("Cannot parse %(content)s; expected 'key = value'.") % {"content": content.strip()},
            line=line,
        )

    lines = _line_map(text)
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(_("Unknown section."), section=name, line=lines.get((name, None)))
    for name in REQUIRED_SECTIONS:
        if not parser.has_section(name):
            raise ConfigError(_("Required section is missing."), section=name)

    sections = {name: {key: value.strip() for key, value in parser.items(name)} for name in parser.sections()}
    return ParsedConfig(sections, lines, source=Path(source) if source else None)


def read_config_file(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(_("Cannot read %(path)s: %(error)s") % {"path": path, "error": exc})
    return parse_config_text(text, source=path)
