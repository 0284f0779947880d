from django.apps import AppConfig


class LongitudinalConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'longitudinal'
    verbose_name = 'Longitudinal aralash model'
