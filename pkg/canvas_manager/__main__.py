"""Entry point for `python -m canvas_manager`."""

from .cli import main

if __name__ == "__main__":
    main()
