""" This file has initialization code for the toolkit """

import json
import os

# get the configurations
from configuration.config import RUN_CONFIG
from mvstdm.controller import build_run_config, flatten_settings, preset_settings
from mvstdm.utilities import ConfigurationError, ValidationError


def create_run_config(config_name, config_file=None, overrides=None):
    """
    This builds the validated run configuration: the preset named
    config_name, then the JSON config_file, then the overrides (None values
    are skipped so unset flags keep the lower layers)
    """
    try:
        preset = RUN_CONFIG[config_name]
    except KeyError:
        raise ConfigurationError('unknown preset %r, expected one of %s'
                                 % (config_name, ', '.join(sorted(RUN_CONFIG))))
    settings = preset_settings(preset)
    if config_file is not None:
        with open(config_file, encoding='utf-8') as handle:
            try:
                data = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ValidationError('%s is not valid JSON: %s' % (config_file, exc))
        settings.update(flatten_settings(data, os.path.basename(config_file)))
    if overrides:
        settings.update(flatten_settings(
            {key: value for key, value in overrides.items() if value is not None}, 'flags'))
    return build_run_config(settings)
