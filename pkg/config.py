from os import getenv

from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = getenv('LOG_LEVEL', 'INFO')
RUNS_DATABASE_URL = getenv('RUNS_DATABASE_URL', 'sqlite:///runs.db')
FORECAST_MATCH_WINDOW_S = float(getenv('FORECAST_MATCH_WINDOW_S', '900'))
FORECAST_PROBABILITY_THRESHOLD = float(getenv('FORECAST_PROBABILITY_THRESHOLD', '0.8'))
