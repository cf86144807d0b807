from rest_framework import serializers


class AnalysisSummarySerializer(serializers.Serializer):
    method = serializers.CharField()
    gamma = serializers.FloatField(allow_null=True)
    rho_pred = serializers.FloatField(allow_null=True)
    rate_fit = serializers.FloatField(allow_null=True)
    rate_stderr = serializers.FloatField(allow_null=True)
    r_squared = serializers.FloatField(allow_null=True)
    fit_window = serializers.ListField(child=serializers.IntegerField(), allow_null=True)
    floor_pred = serializers.FloatField(allow_null=True)
    floor_fit = serializers.FloatField(allow_null=True)
    floor_stderr = serializers.FloatField(allow_null=True)
    inverse_t_slope = serializers.FloatField(allow_null=True)
    passes = serializers.DictField(child=serializers.BooleanField())
