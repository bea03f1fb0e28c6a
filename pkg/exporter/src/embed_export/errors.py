class ExportError(Exception):
    """Anything that prevents a correct export: bad input JSON, a model that
    cannot be loaded, or a question that leaves no room for context."""
