"""partitur: turn a slide deck plus its recorded talk into a publication bundle."""

__version__ = "0.1.0"
