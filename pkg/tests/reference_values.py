"""Published per-model values and aggregates used as regression fixtures."""

US = {
    "gpt-5-mini": 0.34,
    "gpt-5.1": 0.20,
    "gpt-5.2": 0.41,
    "claude-haiku-4-5": 0.71,
    "claude-sonnet-4-5": 0.44,
    "gemini-3-flash": 0.00,
    "grok-4-1-non-reasoning": 0.48,
    "grok-4-1-reasoning": 0.23,
}
CN = {
    "deepseek-v3p2": 0.24,
    "glm-4p6": 0.43,
    "glm-4p7": 0.13,
    "kimi-k2-instruct": 0.39,
    "kimi-k2-thinking": 0.32,
    "qwen3-vl-235b": 0.50,
    "minimax-m2": 0.43,
}
OSS = {
    "llama3.2:1b": 0.89,
    "llama3.2:3b": 0.71,
    "gemma3:4b": 0.85,
    "gemma3n:e4b": 0.64,
    "granite3.3:2b": 0.71,
    "granite4:3b": 0.64,
    "phi4-mini:3.8b": 0.86,
    "olmo-3:7b-instruct": 1.00,
}
BY_ORIGIN = {"US_commercial": US, "CN_commercial": CN, "OSS": OSS}

# LPN endorsement by frame (F0..F3) and origin
FRAME_RATES = {
    "CN_commercial": (0.306, 0.268, 0.344, 0.491),
    "US_commercial": (0.248, 0.402, 0.338, 0.611),
    "OSS": (0.287, 0.804, 0.456, 0.967),
}

KW_H = 18.7
KW_EPS2 = 0.696
CLIFF_US_OSS = -0.94
OSS_BOOT_CI = (0.73, 0.90)
POSTERIOR_MEANS = {"US_commercial": 0.37, "CN_commercial": 0.37, "OSS": 0.80}
MDE_W = 0.30
TOTAL_RECORDS = 43_680
PARSED_RECORDS = 39_975
EXCLUDED_COMPLIANCE = (0.66, 0.62, 0.02)
