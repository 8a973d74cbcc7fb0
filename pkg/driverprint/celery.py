import os
from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'driverprint.settings')

app = Celery('driverprint')
app.config_from_object('django.conf:settings', namespace='CELERY')
app.autodiscover_tasks()
