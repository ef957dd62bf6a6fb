"""
Built-in English stopword list used by the lexical scorers
"""

# Bump when the list changes: relevance scores depend on it
STOPWORDS_VERSION = 1

STOPWORDS = frozenset([
    'a', 'an', 'and', 'are', 'as',
    'at', 'be', 'by', 'for', 'from',
    'has', 'in', 'is', 'it', 'its',
    'of', 'on', 'that', 'the', 'to',
    'was', 'were', 'what', 'will', 'with',
])


def is_stopword(token: str) -> bool:
    return token in STOPWORDS
