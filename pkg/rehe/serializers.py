from rest_framework import serializers


class BootstrapRowSerializer(serializers.Serializer):
    """Bootstrap jadvalining bitta qatori"""
    parameter = serializers.CharField()
    estimate = serializers.FloatField(allow_null=True)
    emp_se = serializers.FloatField(min_value=0, allow_null=True)
    mad = serializers.FloatField(min_value=0, allow_null=True)
    ci_lo = serializers.FloatField(allow_null=True)
    ci_hi = serializers.FloatField(allow_null=True)


class BootstrapSummarySerializer(serializers.Serializer):
    requested = serializers.IntegerField(min_value=1)
    successful = serializers.IntegerField(min_value=0)
    failures = serializers.IntegerField(min_value=0)
    failure_fraction = serializers.FloatField(min_value=0, max_value=1)
    rows = BootstrapRowSerializer(many=True)
    normal_ci = serializers.DictField(child=serializers.ListField(child=serializers.FloatField(allow_null=True)))
