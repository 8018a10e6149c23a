#!/usr/bin/env python3
"""Entry point: ``python molcap.py <command> ...``"""

from cli.molcap_cli import main

if __name__ == "__main__":
    main()
