from rest_framework import serializers

from aireml.serializers import ThetaSerializer
from utils.exceptions import InputError

from .models import GRM_MODES, PRESETS, parse_method


class ScenarioConfigSerializer(serializers.Serializer):
    """Tajriba manifesti"""
    preset = serializers.ChoiceField(choices=sorted(PRESETS), required=False)
    theta = ThetaSerializer(required=False)
    name = serializers.CharField(required=False)
    n_subjects = serializers.IntegerField(min_value=2, required=False)
    visits = serializers.IntegerField(min_value=1, required=False)
    n_variants = serializers.IntegerField(min_value=1, required=False)
    n_causal = serializers.IntegerField(min_value=1, required=False)
    beta = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2, required=False)
    maf_range = serializers.ListField(
        child=serializers.FloatField(min_value=0, max_value=0.5), min_length=2, max_length=2, required=False,
    )
    record_count_probs = serializers.JSONField(required=False, allow_null=True)
    grm_mode = serializers.ChoiceField(choices=GRM_MODES, required=False)
    fresh_genotypes = serializers.BooleanField(required=False)
    methods = serializers.ListField(child=serializers.CharField(), min_length=1, required=False)
    replicates = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)

    def validate_methods(self, value):
        for method in value:
            try:
                parse_method(method)
            except InputError as e:
                raise serializers.ValidationError(str(e))
        return value

    def validate_record_count_probs(self, value):
        if value is None or value == 'plco':
            return value
        if not isinstance(value, list) or not all(isinstance(p, (int, float)) for p in value):
            raise serializers.ValidationError("'plco' yoki sonlar ro'yxati bo'lishi kerak")
        return value

    def validate(self, attrs):
        if 'theta' not in attrs and 'preset' not in attrs:
            raise serializers.ValidationError("theta yoki preset berilishi kerak")
        causal, total = attrs.get('n_causal'), attrs.get('n_variants')
        if causal is not None and total is not None and causal > total:
            raise serializers.ValidationError({'n_causal': "n_variants dan katta bo'lmasligi kerak"})
        return attrs


class SummaryRowSerializer(serializers.Serializer):
    parameter = serializers.CharField()
    scenario = serializers.CharField()
    method = serializers.CharField()
    true = serializers.FloatField(allow_null=True)
    mean = serializers.FloatField(allow_null=True)
    median = serializers.FloatField(allow_null=True)
    se = serializers.FloatField(min_value=0, allow_null=True)
    emp_se = serializers.FloatField(min_value=0, allow_null=True)
    mad = serializers.FloatField(min_value=0, allow_null=True)
    coverage = serializers.FloatField(min_value=0, max_value=1, allow_null=True)
    n = serializers.IntegerField(min_value=0)
    failures = serializers.IntegerField(min_value=0)
