"""
Rate Limiting Service

This module handles rate limiting using slowapi.
Only the endpoints that build a class and solve a transfer operator are
limited; exponent and interval-tree queries are cheap.
"""

from slowapi import Limiter, _rate_limit_exceeded_handler
from slowapi.util import get_remote_address

from horseshoe.core.config import settings

# Create a global limiter instance
limiter = Limiter(
    key_func=get_remote_address,  # Use client IP address to identify users
    enabled=settings.rate_limit_enabled,
)

# Limit string shared by the expensive endpoints
expensive_limit = f"{settings.rate_limit_per_minute}/minute"

# This will be used to handle rate limit errors
rate_limit_exceeded_handler = _rate_limit_exceeded_handler
