"""Run the `hash-report` pipeline; accepts the same flags as `vlqkd hash-report`."""
import sys

from vlqkd.cli import main

if __name__ == "__main__":
    sys.exit(main(["hash-report", *sys.argv[1:]]))
