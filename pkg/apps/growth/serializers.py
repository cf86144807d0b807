import math

from rest_framework import serializers


class GrowthReportSerializer(serializers.Serializer):
    """Flat record: B, M, sigma_sq, classification, probes.seed, probes.scales, analytic."""

    B = serializers.SerializerMethodField()
    M = serializers.FloatField(source="M_wgc")
    sigma_sq = serializers.FloatField()
    classification = serializers.CharField()
    analytic = serializers.BooleanField()
    degenerate = serializers.BooleanField()
    omega = serializers.FloatField(allow_null=True)

    def get_B(self, obj):
        return "inf" if math.isinf(obj.B_sgc) else float(obj.B_sgc)

    def to_representation(self, instance):
        data = super().to_representation(instance)
        probes = instance.probes or {}
        data["probes.seed"] = probes.get("seed")
        data["probes.scales"] = probes.get("scales")
        return data
