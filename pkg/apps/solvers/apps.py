from django.apps import AppConfig


class SolversConfig(AppConfig):
    name = "apps.solvers"
    verbose_name = "Constant-step stochastic gradient iterations"
