from rest_framework import serializers

from .models import REGIMES

METHODS = ('left_trunc', 'double_trunc', 'simple_avg', 'fixed_effect')


class EstimateRowSerializer(serializers.Serializer):
    """Baholar jadvalining bitta qatori"""
    parameter = serializers.CharField()
    estimate = serializers.FloatField(min_value=0)
    se = serializers.FloatField()
    regime = serializers.ChoiceField(choices=REGIMES)
    floor = serializers.FloatField(min_value=0, allow_null=True, required=False)

    def validate_se(self, value):
        if value <= 0:
            raise serializers.ValidationError("SE musbat bo'lishi kerak")
        return value

    def validate(self, attrs):
        if attrs['regime'] == 'double' and attrs['estimate'] > 1:
            raise serializers.ValidationError({'estimate': "Ikki tomonlama rejimda baho 1 dan oshmasligi kerak"})
        return attrs


class EstimatesTableSerializer(serializers.Serializer):
    rows = EstimateRowSerializer(many=True, allow_empty=False)


class CombinedMethodSerializer(serializers.Serializer):
    method = serializers.ChoiceField(choices=METHODS)
    combined = serializers.FloatField(allow_null=True)
    se = serializers.FloatField(min_value=0, allow_null=True)
    unclamped = serializers.FloatField(allow_null=True)
    unbounded = serializers.BooleanField()


class PartitionInputSerializer(serializers.Serializer):
    estimate = serializers.FloatField()
    se = serializers.FloatField(min_value=0)
    at_lower = serializers.BooleanField()
    at_upper = serializers.BooleanField()


class ParameterCombinationSerializer(serializers.Serializer):
    """Bitta parametr bo'yicha birlashtirilgan natija"""
    parameter = serializers.CharField()
    regime = serializers.ChoiceField(choices=REGIMES)
    primary = serializers.ChoiceField(choices=METHODS)
    combined = serializers.FloatField(allow_null=True)
    se = serializers.FloatField(min_value=0, allow_null=True)
    methods = serializers.DictField(child=CombinedMethodSerializer())
    partitions = PartitionInputSerializer(many=True)
    excluded = serializers.ListField(child=serializers.IntegerField(min_value=0))


class PartitionPlanSerializer(serializers.Serializer):
    groups = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField()
    sizes = serializers.ListField(child=serializers.IntegerField(min_value=0))
    assignments = serializers.DictField(child=serializers.IntegerField(min_value=0))
