"""Adapters that turn clips, endpoints, and source videos into the core's
interchange formats: CBF1 bundles, manifests, and batch response files."""

from .chat import chat_complete
from .config import ExtractorConfig
from .extract import DecodeError, extract_bundle
from .fetch import (FetchOutcome, UnavailableSource, fetch_and_trim,
                    http_resolver, local_resolver)

__version__ = "0.1.0"
