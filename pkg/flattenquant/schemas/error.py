"""
Error document printed to stderr when a command fails
"""

from typing import Any, Dict

from pydantic import BaseModel, Field

from flattenquant.schemas.common import SCHEMA_VERSION


class ErrorResponse(BaseModel):
    """Schema for error responses"""

    schema_version: int = Field(default=SCHEMA_VERSION)
    error: str = Field(..., description="Error message")
    code: str = Field(..., description="Stable error code")
    detail: Dict[str, Any] = Field(default_factory=dict, description="Additional error details")
