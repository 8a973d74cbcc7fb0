import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'driverprint.settings')
django.setup()
