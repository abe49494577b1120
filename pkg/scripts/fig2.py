"""Run the `fig2` pipeline; accepts the same flags as `vlqkd fig2`."""
import sys

from vlqkd.cli import main

if __name__ == "__main__":
    sys.exit(main(["fig2", *sys.argv[1:]]))
