from django.apps import AppConfig


class MetaanalysisConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'metaanalysis'
    verbose_name = 'Bo\'laklash va meta-tahlil'
