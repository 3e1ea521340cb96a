#!/usr/bin/env python3
"""
IV Falsification Toolkit - Quick Start Runner
Checks dependencies, then hands the arguments to the ivfalsify command line
"""

import sys
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def check_python_dependencies() -> bool:
    """Check if Python dependencies are installed"""
    required_packages = ['yaml', 'dotenv', 'numpy', 'pandas', 'sympy']

    missing_packages = []
    for package in required_packages:
        try:
            __import__(package)
        except ImportError:
            missing_packages.append(package)

    if missing_packages:
        print(f"❌ Missing packages: {', '.join(missing_packages)}", file=sys.stderr)
        print("💡 Run: pip install -r requirements.txt", file=sys.stderr)
        return False
    return True


def main() -> int:
    if not check_python_dependencies():
        return 1

    from ivfalsify.cli import main as cli_main

    default_config = Path(__file__).resolve().parent / 'config' / 'appendix_b.yaml'
    argv = sys.argv[1:] or ['test', '--config', str(default_config)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
