"""Run the `fig1` pipeline; accepts the same flags as `vlqkd fig1`."""
import sys

from vlqkd.cli import main

if __name__ == "__main__":
    sys.exit(main(["fig1", *sys.argv[1:]]))
