"""``python -m peacocklab`` entry point."""
from .cli import main

main()
