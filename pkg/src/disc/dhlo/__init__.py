from .ir import DhloGraph, DhloOp, GraphBuilder, Sym, SymbolOrigin, Value
from .serialize import dumps, loads, to_text
from .verify import Diagnostic, verify

__all__ = [
    "DhloGraph", "DhloOp", "GraphBuilder", "Sym", "SymbolOrigin", "Value",
    "dumps", "loads", "to_text", "Diagnostic", "verify",
]
