from django.apps import AppConfig


class ReheConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'rehe'
    verbose_name = 'REHE momentlar usuli'
