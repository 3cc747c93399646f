"""Module entry point so ``python -m cknlab`` matches the console script."""

from .cli_io import main

if __name__ == "__main__":
    main()
