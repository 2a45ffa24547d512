"""Echo shim that hangs when it sees a SLEEP object."""

import json
import sys
import time


def main():
    persistent = "--persistent" in sys.argv[1:]
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        objects = [t["object"] for t in request["triples"]]
        if "SLEEP" in objects:
            time.sleep(600)
        sys.stdout.write(json.dumps({"text": " ".join(objects)}) + "\n")
        sys.stdout.flush()
        if not persistent:
            break


if __name__ == "__main__":
    main()
