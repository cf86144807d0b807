"""
Django settings for sgm_lab project.

The project has no web surface and no database: Django provides the app registry,
the settings layer, logging configuration, management commands and the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.1/ref/settings/
"""

from pathlib import Path
import os

import environ
from decouple import config

env = environ.Env(
    DEBUG=(bool, False),
    SGM_THREADS=(int, os.cpu_count() or 1),
    SGM_REPLICATION_BLOCK=(int, 256),
)
environ.Env.read_env()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals (signing); nothing in the lab is secret.
SECRET_KEY = env("SECRET_KEY", default="sgm-lab-insecure-local-key")

DEBUG = env("DEBUG")

ALLOWED_HOSTS = []


# Application definition
INSTALLED_APPS = [
    "rest_framework",
    "apps.problems",
    "apps.geometry",
    "apps.solvers",
    "apps.growth",
    "apps.analysis",
    "apps.experiments",
]

REST_FRAMEWORK = {
    "UNAUTHENTICATED_USER": None,
    "COERCE_DECIMAL_TO_STRING": False,
}

# No result database.
DATABASES = {}

USE_I18N = True
USE_TZ = True
LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"


# Experiment harness settings

# Root directory for run outputs when neither the config nor --out names one.
SGM_OUTPUT_ROOT = Path(env("SGM_OUTPUT_ROOT", default=str(BASE_DIR / "runs")))

# Default replication parallelism (overridable with --threads).
SGM_THREADS = env("SGM_THREADS")

# Replications advanced together per vectorised block; block boundaries never depend
# on the thread count.
SGM_REPLICATION_BLOCK = env("SGM_REPLICATION_BLOCK")

SGM_LOG_LEVEL = config("SGM_LOG_LEVEL", default="INFO")


# Logging
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {name} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": "WARNING",
    },
    "loggers": {
        "apps": {
            "handlers": ["console"],
            "level": SGM_LOG_LEVEL,
            "propagate": False,
        },
        "sgm_lab": {
            "handlers": ["console"],
            "level": SGM_LOG_LEVEL,
            "propagate": False,
        },
    },
}
