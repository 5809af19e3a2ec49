"""Entry point for running noise-gate-sim as a module."""
# pylint: disable=invalid-name

from .cli import main

if __name__ == "__main__":
    main()  # pylint: disable=no-value-for-parameter
