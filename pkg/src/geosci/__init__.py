"""Geographic collaboration networks from WoS and Scopus address bylines."""

__version__ = "0.1.0"
