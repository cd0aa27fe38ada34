from poissonsheaf.cli import main


__all__ = ["main"]
