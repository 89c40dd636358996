"""Main entry point for malproc_monitor package."""

from .cli import main

if __name__ == "__main__":
    main()
