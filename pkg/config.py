from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field, field_validator

class Settings(BaseSettings):
    # Logging settings
    MCG_LOG: str = Field(default="info")
    MCG_LOG_FORMAT: str = Field(default="json")

    # Performance settings
    MCG_SLOW_OPERATION_MS: float = Field(default=60000.0, gt=0)
    MCG_PREDICT_CHUNK: int = Field(default=512, ge=1)

    # Pydantic v2 config
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding='utf-8',
        extra='ignore',
        case_sensitive=True,
    )

    @field_validator('MCG_LOG')
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        level = v.strip().lower()
        if level not in ("error", "info", "debug"):
            raise ValueError("MCG_LOG must be one of error, info, debug")
        return level

    @field_validator('MCG_LOG_FORMAT')
    @classmethod
    def validate_log_format(cls, v: str) -> str:
        fmt = v.strip().lower()
        if fmt not in ("json", "text"):
            raise ValueError("MCG_LOG_FORMAT must be json or text")
        return fmt

# Initialize settings
settings = Settings()
