from rest_framework import serializers


class RunManifestSerializer(serializers.Serializer):
    subcommand = serializers.ChoiceField(
        choices=['grm', 'preprocess', 'fit', 'simulate', 'experiment', 'meta_combine'],
    )
    inputs = serializers.DictField(child=serializers.RegexField(r'^[0-9a-f]{64}$'))
    options = serializers.DictField()
    seed = serializers.IntegerField(allow_null=True)
    version = serializers.CharField()
    started_at = serializers.DateTimeField()
    wall_clock = serializers.FloatField(min_value=0, allow_null=True)
    outputs = serializers.ListField(child=serializers.CharField())
    extra = serializers.DictField(required=False)
