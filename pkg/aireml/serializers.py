from rest_framework import serializers


class ThetaSerializer(serializers.Serializer):
    sigma2_g = serializers.FloatField(min_value=0)
    sigma2_gstar = serializers.FloatField(min_value=0)
    sigma2_b0 = serializers.FloatField(min_value=0)
    sigma2_b1 = serializers.FloatField(min_value=0)
    sigma2_e = serializers.FloatField(min_value=0)


class XiSerializer(serializers.Serializer):
    lambda1 = serializers.FloatField(min_value=0, max_value=1, allow_null=True)
    lambda2 = serializers.FloatField(min_value=0, max_value=1, allow_null=True)
    xi3 = serializers.FloatField(min_value=0)
    xi4 = serializers.FloatField(min_value=0)
    xi5 = serializers.FloatField(min_value=0)


class NullableFloatDictField(serializers.DictField):
    child = serializers.FloatField(allow_null=True)


class MatrixField(serializers.ListField):
    child = serializers.ListField(child=serializers.FloatField(allow_null=True))


class FitResultSerializer(serializers.Serializer):
    """Bitta baholash natijasining JSON hujjati"""
    method = serializers.CharField()
    theta = ThetaSerializer()
    xi = XiSerializer()
    beta = NullableFloatDictField()
    se_theta = NullableFloatDictField()
    se_xi = NullableFloatDictField()
    lambda_ci = serializers.DictField(
        child=serializers.ListField(child=serializers.FloatField(), allow_null=True, min_length=2, max_length=2),
    )
    ai_theta = MatrixField(allow_null=True, required=False)
    cov_theta = MatrixField(allow_null=True, required=False)
    cov_xi = MatrixField(allow_null=True, required=False)
    loglik_trace = serializers.ListField(child=serializers.FloatField(allow_null=True), required=False)
    converged = serializers.BooleanField()
    iterations = serializers.IntegerField(min_value=0)
    boundary_flags = serializers.DictField(child=serializers.BooleanField())
    frozen = serializers.DictField(child=serializers.BooleanField(), required=False)
    reset_iterations = serializers.ListField(child=serializers.IntegerField(), required=False)
    damped_iterations = serializers.ListField(child=serializers.IntegerField(), required=False)
    sigma2_ph = serializers.FloatField(allow_null=True)
    floor = serializers.FloatField(allow_null=True)
    n_subjects = serializers.IntegerField(min_value=0)
    n_records = serializers.IntegerField(min_value=0)
    options = serializers.DictField(required=False)
