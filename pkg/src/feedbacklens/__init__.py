"""Feedback analytics engine.

Turns batches of verbatim feedback into a structured store through LLM
classification and abstractive topic modeling, then answers analysts'
natural-language questions by planning, generating and executing analysis
code, returning text, tables and images.
"""

__version__ = "0.1.0"
