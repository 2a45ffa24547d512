"""Stub shim: echoes every object value, ignoring the program source.

Speaks the sandbox wire protocol in both per-process and persistent modes.
"""

import json
import sys


def main():
    persistent = "--persistent" in sys.argv[1:]
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        text = " ".join(t["object"] for t in request["triples"])
        sys.stdout.write(json.dumps({"text": text}, ensure_ascii=False) + "\n")
        sys.stdout.flush()
        if not persistent:
            break


if __name__ == "__main__":
    main()
