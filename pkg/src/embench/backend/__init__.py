from .cache import VectorStore, cache_key
from .client import Backend, BackendSpec, RetryPolicy, post_json
from .ledger import UsageLedger, estimate_tokens, ledger_summary

__all__ = [
    "Backend",
    "BackendSpec",
    "RetryPolicy",
    "UsageLedger",
    "VectorStore",
    "cache_key",
    "estimate_tokens",
    "ledger_summary",
    "post_json",
]
