from rest_framework import serializers


class ProblemSummarySerializer(serializers.Serializer):
    name = serializers.CharField()
    dim = serializers.IntegerField()
    n = serializers.IntegerField()
    lipschitz_L = serializers.FloatField()
    per_component_L0 = serializers.FloatField()
    strong_mu = serializers.FloatField()
    restricted_mu = serializers.FloatField()
    f_star = serializers.FloatField()
    solution = serializers.SerializerMethodField()

    def get_solution(self, obj):
        x_star = getattr(obj.solution_projector, "x_star", None)
        if x_star is None:
            return None
        return [float(value) for value in x_star]
