import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "sgm_lab.settings")
django.setup()
