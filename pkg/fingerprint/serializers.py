from rest_framework import serializers


def _int_list(value):
    return tuple(int(v) for v in str(value).replace(' ', '').split(',') if v)


class RunConfigSerializer(serializers.Serializer):
    seed = serializers.IntegerField(min_value=0)

    # Encoder
    conv1_width = serializers.IntegerField(min_value=1)
    conv2_width = serializers.IntegerField(min_value=1)
    conv_channels = serializers.IntegerField(min_value=1)
    model_dim = serializers.IntegerField(min_value=1)
    heads = serializers.IntegerField(min_value=1)
    stack = serializers.IntegerField(min_value=1)
    ff_dim = serializers.IntegerField(min_value=1)
    embedding_dim = serializers.IntegerField(min_value=1)
    layer_norm_eps = serializers.FloatField()

    # Pipeline
    window_seconds = serializers.FloatField()
    overlap = serializers.FloatField()
    stat_features = serializers.BooleanField()
    sub_windows = serializers.IntegerField(min_value=1)
    train_fraction = serializers.FloatField()
    sample_rate = serializers.FloatField(min_value=0)
    channels = serializers.CharField(allow_blank=True, required=False, default='')

    # Training
    lr = serializers.FloatField()
    beta1 = serializers.FloatField(min_value=0)
    beta2 = serializers.FloatField(min_value=0)
    adam_eps = serializers.FloatField()
    epochs = serializers.IntegerField(min_value=1)
    batch = serializers.IntegerField(min_value=1)
    way = serializers.IntegerField(min_value=2)
    shot = serializers.IntegerField(min_value=1)
    query = serializers.IntegerField(min_value=1)
    episodes_per_epoch = serializers.IntegerField(min_value=1)
    proto_epochs = serializers.IntegerField(min_value=1)
    folds = serializers.IntegerField(min_value=2)
    eval_episodes = serializers.IntegerField(min_value=1)
    train_way = serializers.IntegerField(min_value=2)
    ways = serializers.CharField()
    shots = serializers.CharField()

    # Synthetic data
    drivers = serializers.IntegerField(min_value=1)
    seconds_per_driver = serializers.FloatField()
    synth_channels = serializers.IntegerField(min_value=1)
    synth_rate = serializers.FloatField()
    separation = serializers.FloatField(min_value=0)

    # Paths
    input = serializers.CharField(allow_blank=True, allow_null=True, required=False, default=None)
    output = serializers.CharField(allow_blank=True, allow_null=True, required=False, default=None)
    checkpoint = serializers.CharField(allow_blank=True, allow_null=True, required=False, default=None)

    def _positive(self, value, name):
        if value <= 0:
            raise serializers.ValidationError(f"{name} must be positive")
        return value

    def validate_layer_norm_eps(self, value):
        return self._positive(value, 'layer_norm_eps')

    def validate_window_seconds(self, value):
        return self._positive(value, 'window_seconds')

    def validate_lr(self, value):
        return self._positive(value, 'lr')

    def validate_adam_eps(self, value):
        return self._positive(value, 'adam_eps')

    def validate_seconds_per_driver(self, value):
        return self._positive(value, 'seconds_per_driver')

    def validate_synth_rate(self, value):
        return self._positive(value, 'synth_rate')

    def _way_shot_list(self, value, minimum):
        try:
            parsed = _int_list(value)
        except ValueError:
            raise serializers.ValidationError("expected a comma-separated list of integers")
        if not parsed or min(parsed) < minimum:
            raise serializers.ValidationError(f"expected integers of at least {minimum}")
        return parsed

    def validate_ways(self, value):
        return self._way_shot_list(value, 2)

    def validate_shots(self, value):
        return self._way_shot_list(value, 1)

    def validate_channels(self, value):
        return tuple(c.strip() for c in value.split(',') if c.strip())

    def validate(self, attrs):
        unknown = sorted(set(self.initial_data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({'non_field_errors': [f"unknown keys: {', '.join(unknown)}"]})
        if attrs['model_dim'] % attrs['heads']:
            raise serializers.ValidationError(
                {'heads': [f"heads ({attrs['heads']}) must divide model_dim ({attrs['model_dim']})"]}
            )
        if not 0 <= attrs['overlap'] < 1:
            raise serializers.ValidationError({'overlap': ["overlap must be in [0, 1)"]})
        if not 0 < attrs['train_fraction'] < 1:
            raise serializers.ValidationError({'train_fraction': ["train_fraction must be in (0, 1)"]})
        for beta in ('beta1', 'beta2'):
            if not attrs[beta] < 1:
                raise serializers.ValidationError({beta: [f"{beta} must be below 1"]})
        for path in ('input', 'output', 'checkpoint'):
            attrs[path] = attrs.get(path) or None
        return attrs
