import sys

from besovkit.cli import main

# Entry for running from a checkout without installing: python main.py <command> --config ... --out ...
if __name__ == "__main__":
    sys.exit(main())
