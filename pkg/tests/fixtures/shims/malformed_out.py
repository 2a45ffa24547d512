"""Misbehaving fixture: exits 0 with a non-protocol response."""

import sys

sys.stdin.readline()
print("this is not json")
