from .export import ExportError, ExportSpec, export_model, test_image

__version__ = "0.1.0"
