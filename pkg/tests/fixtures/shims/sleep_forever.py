"""Misbehaving fixture: never answers."""

import time

time.sleep(3600)
