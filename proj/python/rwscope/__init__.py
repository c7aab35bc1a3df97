"""ELF feature extraction, size profiles and rewriter scope prediction."""

try:
    from ._rwscope import *  # noqa: F401,F403
    from ._rwscope import RwscopeError, MalformedElf, Unsupported, IoError, SchemaError  # noqa: F401
except ImportError:
    from _rwscope import *  # noqa: F401,F403
    from _rwscope import RwscopeError, MalformedElf, Unsupported, IoError, SchemaError  # noqa: F401
