from django.apps import AppConfig


class GrowthConfig(AppConfig):
    name = "apps.growth"
    verbose_name = "Growth conditions"
