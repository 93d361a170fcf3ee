from .adapters import ReferenceLinearAdapter, load_adapter
from .server import BridgeServer

__all__ = ["BridgeServer", "ReferenceLinearAdapter", "load_adapter"]
