from django.apps import AppConfig


class AiremlConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'aireml'
    verbose_name = 'AI-REML baholash'
