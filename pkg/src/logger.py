import logging
import os

from config import LOG_LEVEL


def setup_logging(level=LOG_LEVEL):
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')


class Logger:
    """Run logger: DEBUG and up to the run log file, `level` and up to the console.

    With ``capture_modules`` the file handler is also attached to the root logger, so
    module loggers end up in the run log at whatever level the root allows.
    """

    def __init__(self, log_file='run.log', level=LOG_LEVEL, name='TiltShield', capture_modules=False):
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False
        self.log_file = log_file
        self.capture_modules = capture_modules

        directory = os.path.dirname(log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)

        # Create a file handler
        self.file_handler = logging.FileHandler(log_file)
        self.file_handler.setLevel(logging.DEBUG)

        # Create a console handler
        self.console_handler = logging.StreamHandler()
        self.console_handler.setLevel(level)

        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        self.file_handler.setFormatter(formatter)
        self.console_handler.setFormatter(formatter)

        self.logger.addHandler(self.file_handler)
        self.logger.addHandler(self.console_handler)
        if capture_modules:
            logging.getLogger().addHandler(self.file_handler)

    def debug(self, message):
        self.logger.debug(message)

    def info(self, message):
        self.logger.info(message)

    def warning(self, message):
        self.logger.warning(message)

    def error(self, message):
        self.logger.error(message)

    def log_episode(self, seed, episode, row):
        self.logger.info(
            f"seed {seed} episode {episode}: reward {row['reward']:.4f} "
            f"cov {row['cov']:.3f} qual {row['qual']:.3f} "
            f"agent share {row['source_fraction_agent']:.2f}"
        )

    def log_seed_failure(self, seed, error_info):
        self.logger.error(f'Seed {seed} failed: {error_info}')

    def close(self):
        if self.capture_modules:
            logging.getLogger().removeHandler(self.file_handler)
        for handler in (self.file_handler, self.console_handler):
            self.logger.removeHandler(handler)
            handler.close()
