"""Misbehaving fixture: single line but with extra keys."""

import json
import sys

sys.stdin.readline()
print(json.dumps({"text": "ok", "debug": 1}))
