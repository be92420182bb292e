"""REST API test amplification with single- and multi-agent LLM workflows."""

__version__ = "0.1.0"
