import os
from omegaconf import OmegaConf, DictConfig

# In this repo, use the CONFIG global variable for everything!

CONFIG = DictConfig({})

ROOT = os.path.dirname(os.path.abspath(__file__))


def load_config(filename, include_cmd_line=True, overrides=None):
    """ Loads configuration from default.yaml, local.yaml, the config
    filename, command line arguments and then the overrides dotlist, in
    that order. Returns nothing; it loads everything into the CONFIG
    global variable. """
    cfg = OmegaConf.load(os.path.join(ROOT, "configs", "default.yaml"))

    # machine-specific stuff (worker counts, output dirs)
    platform_config = os.path.join(ROOT, "configs", "local.yaml")
    if os.path.exists(platform_config):
        cfg = OmegaConf.merge(cfg, OmegaConf.load(platform_config))

    if filename is not None:
        cfg = OmegaConf.merge(cfg, OmegaConf.load(filename))

    if include_cmd_line:
        cfg = OmegaConf.merge(cfg, OmegaConf.from_cli())

    if overrides:
        cfg = OmegaConf.merge(cfg, OmegaConf.from_dotlist(list(overrides)))

    for key in list(CONFIG.keys()):
        del CONFIG[key]

    CONFIG.update(cfg)


load_config(None, include_cmd_line=False)
