from .defaults import default_float, default_int, load_defaults

__all__ = ["default_float", "default_int", "load_defaults"]
