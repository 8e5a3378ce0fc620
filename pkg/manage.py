#!/usr/bin/env python
"""Same dispatcher as the `tcl-lab` console script, for running from a checkout."""

from tcl_lab.cli import main

if __name__ == "__main__":
    main()
