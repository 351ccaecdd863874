#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import sys
from pathlib import Path

# Add backend directory to Python path
backend_dir = Path(__file__).parent.absolute()
sys.path.insert(0, str(backend_dir))


def main():
    """Run the command-line front end."""
    from cli.commands import run

    sys.exit(run())


if __name__ == "__main__":
    main()
