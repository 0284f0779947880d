from django.apps import AppConfig


class GrmConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'grm'
    verbose_name = 'Genetik bog\'liqlik matritsasi'
