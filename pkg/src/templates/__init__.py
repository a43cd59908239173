"""Template package exports."""

from .codec_templates import (
    CodecTemplate,
    KeyCodec,
    build_codec,
    get_codec_template,
    initialise_codec_templates,
    list_codec_templates,
    octopus_split,
)

__all__ = [
    "CodecTemplate",
    "KeyCodec",
    "build_codec",
    "get_codec_template",
    "initialise_codec_templates",
    "list_codec_templates",
    "octopus_split",
]
