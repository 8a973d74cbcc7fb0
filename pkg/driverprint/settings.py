"""
Django settings for the driverprint project.

The project has no web surface and no database; Django hosts the management
commands, the run-configuration validation and the Celery integration.
"""
import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'django-insecure-driverprint-local-only')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = os.getenv('ALLOWED_HOSTS', 'localhost,127.0.0.1').split(',')


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'fingerprint',
]

DATABASES = {}

# DRF is used for validation only; nothing may pull in django.contrib.auth
REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
    'UNAUTHENTICATED_USER': None,
}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Logging
LOG_LEVEL = os.getenv('DRIVERPRINT_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'timestamped': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'timestamped',
        },
    },
    'loggers': {
        'fingerprint': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}

# Redis configuration (optional)
REDIS_URL = os.getenv('REDIS_URL', 'redis://localhost:6379/0')

# Celery configuration (cross-validation folds run as tasks)
CELERY_BROKER_URL = REDIS_URL
CELERY_RESULT_BACKEND = REDIS_URL
CELERY_TASK_ALWAYS_EAGER = os.getenv('CELERY_TASK_ALWAYS_EAGER', 'True') == 'True'
CELERY_TASK_EAGER_PROPAGATES = True
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'

# Run defaults; a config file, --set and per-key flags override these
DRIVERPRINT_SETTINGS = {
    'SEED': 0,
    # Encoder
    'CONV1_WIDTH': 3,
    'CONV2_WIDTH': 3,
    'CONV_CHANNELS': 32,
    'MODEL_DIM': 64,
    'HEADS': 16,
    'STACK': 1,
    'FF_DIM': 128,
    'EMBEDDING_DIM': 64,
    'LAYER_NORM_EPS': 1e-5,
    # Pipeline
    'WINDOW_SECONDS': 30,
    'OVERLAP': 0.5,
    'STAT_FEATURES': False,
    'SUB_WINDOWS': 6,
    'TRAIN_FRACTION': 0.8,
    'SAMPLE_RATE': 0,  # 0 infers the rate from timestamps
    'CHANNELS': '',  # empty uses every non-reserved column
    # Training
    'LR': 0.001,
    'BETA1': 0.9,
    'BETA2': 0.999,
    'ADAM_EPS': 1e-8,
    'EPOCHS': 150,
    'BATCH': 32,
    'WAY': 10,
    'SHOT': 5,
    'QUERY': 5,
    'EPISODES_PER_EPOCH': 200,
    'PROTO_EPOCHS': 50,
    'FOLDS': 5,
    'EVAL_EPISODES': 200,
    'TRAIN_WAY': 8,
    'WAYS': '5,10',
    'SHOTS': '1,5,10',
    # Synthetic data
    'DRIVERS': 10,
    'SECONDS_PER_DRIVER': 3015,
    'SYNTH_CHANNELS': 6,
    'SYNTH_RATE': 1.0,
    'SEPARATION': 1.0,
    # Paths
    'INPUT': None,
    'OUTPUT': None,
    'CHECKPOINT': None,
}
