"""
Configuration settings for the B-link tree index.
"""

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Page Configuration
PAGE_BITS = int(os.getenv('BLINK_PAGE_BITS', '12'))
MIN_PAGE_BITS = 9
MAX_PAGE_BITS = 20
MAX_KEY_LENGTH = 255

# Buffer Configuration
CACHE_CAPACITY = int(os.getenv('BLINK_CACHE_CAPACITY', '65536'))
LATCH_CAPACITY = int(os.getenv('BLINK_LATCH_CAPACITY', '65536'))
LATCH_EVENT_CAPACITY = int(os.getenv('BLINK_LATCH_EVENT_CAPACITY', '100000'))
MAX_PAGES = int(os.getenv('BLINK_MAX_PAGES', '0'))  # 0 = unbounded

# Protocol Configuration
ACCESS_INTENT_ENABLED = os.getenv('BLINK_ACCESS_INTENT', 'true').lower() == 'true'
DEBUG_CHECKS = os.getenv('BLINK_DEBUG_CHECKS', 'false').lower() == 'true'
RECORD_LATCH_EVENTS = os.getenv('BLINK_RECORD_LATCH_EVENTS', 'false').lower() == 'true'

# File Paths
DEFAULT_TREE_FILE = os.getenv('BLINK_FILE', 'tree.db')
OUTPUT_DIR = 'outputs'

# Stress Configuration
STRESS_WORKERS = int(os.getenv('STRESS_WORKERS', '8'))
STRESS_OPS = int(os.getenv('STRESS_OPS', '50000'))
STRESS_SEED = int(os.getenv('STRESS_SEED', '7'))
STRESS_MIX = os.getenv('STRESS_MIX', '40/20/35/5')  # put/remove/get/scan
STRESS_TIMEOUT = float(os.getenv('STRESS_TIMEOUT', '120'))
STRESS_KEYS_PER_WORKER = int(os.getenv('STRESS_KEYS_PER_WORKER', '4096'))

# Scripted Interleaving
SCRIPT_BLOCK_TIMEOUT = float(os.getenv('SCRIPT_BLOCK_TIMEOUT', '0.2'))
SCRIPT_GRANT_TIMEOUT = float(os.getenv('SCRIPT_GRANT_TIMEOUT', '10'))

# Logging Configuration
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FILE = os.getenv('LOG_FILE', os.path.join(OUTPUT_DIR, 'logs', 'blink_tree.log'))

# CLI Exit Statuses
EXIT_OK = 0
EXIT_NOT_FOUND = 1
EXIT_USAGE = 2
EXIT_CORRUPT = 3
