from django.utils.translation import gettext_lazy as _
from rest_framework import serializers

from apps.experiments.models import CHECKS
from apps.solvers.models import METHODS, PROX_SGM, PSGM, RESOLVENT_SGM, SGM

SET_KINDS = ("whole_space", "hyperplane", "halfspace", "box", "ball", "affine")
REGULARIZER_KINDS = ("zero", "constant", "l1", "indicator", "quadratic")
OPERATOR_KINDS = ("zero_operator", "scaled_identity", "skew", "symmetric")

GEOMETRY_KINDS_FOR_METHOD = {
    SGM: ("whole_space",),
    PSGM: SET_KINDS,
    PROX_SGM: REGULARIZER_KINDS,
    RESOLVENT_SGM: OPERATOR_KINDS,
}

PROBLEM_KEYS = {
    "kaczmarz": {"rows", "dim", "seed", "consistent", "noise"},
    "two_point": set(),
    "quadratic_l1": {"components", "dim", "seed", "spread", "noise"},
    "shared_minimizer": {"components", "dim", "seed", "spread"},
    "custom_matrix_file": {"path"},
}
PROBLEM_REQUIRED = {
    "kaczmarz": {"rows", "dim"},
    "quadratic_l1": {"components", "dim"},
    "shared_minimizer": {"components", "dim"},
    "custom_matrix_file": {"path"},
}

GEOMETRY_REQUIRED = {
    "hyperplane": {"normal", "offset"},
    "halfspace": {"normal", "offset"},
    "box": {"lo", "hi"},
    "ball": {"center", "radius"},
    "affine": {"matrix", "offset"},
    "constant": {"value"},
    "l1": {"weight"},
    "indicator": {"set_kind"},
    "quadratic": {"matrix"},
    "scaled_identity": {"scale"},
    "skew": {"scale"},
    "symmetric": {"matrix"},
}


class CommaListField(serializers.ListField):
    """``a, b, c`` written on one line."""

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [item.strip() for item in data.split(",") if item.strip()]
        return super().to_internal_value(data)


class VectorField(CommaListField):
    def __init__(self, **kwargs):
        kwargs.setdefault("child", serializers.FloatField())
        kwargs.setdefault("min_length", 1)
        super().__init__(**kwargs)


class MatrixField(serializers.Field):
    """Rows separated by ``;``, entries by ``,``."""

    default_error_messages = {
        "ragged": _("Every matrix row must have the same number of entries."),
        "number": _("Matrix entries must be real numbers."),
        "empty": _("The matrix is empty."),
    }

    def to_internal_value(self, data):
        rows = [row for row in str(data).split(";") if row.strip()]
        if not rows:
            self.fail("empty")
        try:
            matrix = [[float(item) for item in row.split(",")] for row in rows]
        except ValueError:
            self.fail("number")
        if len({len(row) for row in matrix}) != 1:
            self.fail("ragged")
        return matrix

    def to_representation(self, value):
        return "; ".join(", ".join(repr(float(item)) for item in row) for row in value)


class StrictSerializer(serializers.Serializer):
    """Rejects keys the serializer does not declare."""

    def to_internal_value(self, data):
        unknown = sorted(set(data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({key: [_("Unknown key.")] for key in unknown})
        return super().to_internal_value(data)


class ExperimentSectionSerializer(StrictSerializer):
    name = serializers.RegexField(r"^[A-Za-z0-9_.-]+$", max_length=128)
    method = serializers.ChoiceField(choices=METHODS)
    iterations = serializers.IntegerField(min_value=1)
    replications = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(min_value=0, max_value=2**64 - 1)
    output = serializers.CharField(required=False)
    checks = CommaListField(child=serializers.ChoiceField(choices=CHECKS), required=False, default=list)
    threads = serializers.IntegerField(min_value=1, required=False)
    audit_replication = serializers.IntegerField(min_value=0, required=False, default=0)

    def validate_checks(self, value):
        if len(set(value)) != len(value):
            raise serializers.ValidationError(_("A check is listed more than once."))
        return value

    def validate(self, data):
        if data["audit_replication"] >= data["replications"]:
            raise serializers.ValidationError(
                {"audit_replication": [_("Must be smaller than the number of replications.")]}
            )
        return data


class ProblemSectionSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=sorted(PROBLEM_KEYS))
    rows = serializers.IntegerField(min_value=1, required=False)
    dim = serializers.IntegerField(min_value=1, required=False)
    components = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, max_value=2**32 - 1, required=False, default=0)
    consistent = serializers.BooleanField(required=False, default=True)
    noise = serializers.FloatField(min_value=0.0, required=False)
    spread = serializers.FloatField(min_value=0.0, required=False)
    path = serializers.CharField(required=False)

    def validate(self, data):
        kind = data["kind"]
        allowed = PROBLEM_KEYS[kind] | {"kind"}
        given = set(self.initial_data)
        extra = sorted(given - allowed)
        if extra:
            raise serializers.ValidationError(
                {key: [_("Not a parameter of kind '%(kind)s'.") % {"kind": kind}] for key in extra}
            )
        missing = sorted(PROBLEM_REQUIRED.get(kind, set()) - given)
        if missing:
            raise serializers.ValidationError({key: [_("This field is required.")] for key in missing})
        if kind == "kaczmarz" and data.get("consistent", True) and "noise" in given:
            raise serializers.ValidationError({"noise": [_("Only inconsistent systems take a noise level.")]})
        return data


class GeometrySectionSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=SET_KINDS + REGULARIZER_KINDS + OPERATOR_KINDS)
    set_kind = serializers.ChoiceField(choices=SET_KINDS, required=False)
    weight = serializers.FloatField(min_value=0.0, required=False)
    value = serializers.FloatField(required=False)
    radius = serializers.FloatField(min_value=0.0, required=False)
    scale = serializers.FloatField(min_value=0.0, required=False)
    lo = VectorField(required=False)
    hi = VectorField(required=False)
    center = VectorField(required=False)
    normal = VectorField(required=False)
    offset = VectorField(required=False)
    linear = VectorField(required=False)
    matrix = MatrixField(required=False)
    seed = serializers.IntegerField(min_value=0, max_value=2**32 - 1, required=False, default=0)

    def validate(self, data):
        kind = data["kind"]
        given = set(self.initial_data)
        required = set(GEOMETRY_REQUIRED.get(kind, set()))
        if kind == "indicator" and data.get("set_kind"):
            required |= GEOMETRY_REQUIRED.get(data["set_kind"], set())
        missing = sorted(required - given)
        if missing:
            raise serializers.ValidationError({key: [_("This field is required.")] for key in missing})
        return data


class StepSectionSerializer(StrictSerializer):
    policy = serializers.ChoiceField(choices=("constant", "inverse_t", "recommend"))
    gamma = serializers.FloatField(min_value=0.0, required=False)
    c = serializers.FloatField(min_value=0.0, required=False)

    def validate(self, data):
        policy = data["policy"]
        if policy == "constant" and not data.get("gamma"):
            raise serializers.ValidationError({"gamma": [_("A constant step needs a positive gamma.")]})
        if policy != "constant" and "gamma" in data:
            raise serializers.ValidationError({"gamma": [_("Only the constant policy takes gamma.")]})
        if policy != "inverse_t" and "c" in data:
            raise serializers.ValidationError({"c": [_("Only the inverse_t policy takes c.")]})
        if "c" in data and not data["c"] > 0:
            raise serializers.ValidationError({"c": [_("c must be positive.")]})
        return data


class ChecksSectionSerializer(StrictSerializer):
    omega_slack = serializers.FloatField(min_value=0.0, required=False, default=0.0)
    floor_factor = serializers.FloatField(min_value=1.0, required=False, default=4.0)
    rate_slack = serializers.FloatField(min_value=0.0, required=False, default=0.01)
    necessary_steps = serializers.IntegerField(min_value=1, required=False, default=500)


SECTION_SERIALIZERS = {
    "experiment": ExperimentSectionSerializer,
    "problem": ProblemSectionSerializer,
    "geometry": GeometrySectionSerializer,
    "step": StepSectionSerializer,
    "checks": ChecksSectionSerializer,
}


class CheckResultSerializer(serializers.Serializer):
    name = serializers.CharField()
    status = serializers.CharField()
    detail = serializers.CharField(allow_blank=True)
    values = serializers.DictField()


class ManifestSerializer(serializers.Serializer):
    name = serializers.CharField(source="config.name")
    method = serializers.CharField(source="config.method")
    seed = serializers.IntegerField(source="config.seed")
    iterations = serializers.IntegerField(source="config.iterations")
    replications = serializers.IntegerField(source="config.replications")
    passed = serializers.BooleanField()
    exit_code = serializers.IntegerField()
    checks = CheckResultSerializer(many=True)
