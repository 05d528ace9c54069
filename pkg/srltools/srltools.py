import copy
import logging
from pathlib import Path
from pprint import pprint
from os.path import dirname, expanduser, realpath, join

import click
import yaml

from srltools.common import ConfigError, SrlError, parse_readme_for_docstrings, docstring_parameter
from srltools.srl_encoder import MODES, REPRS, ModelConfig, read_model_config
from srltools.syntax_features import TREE_SOURCES


readme_dir = dirname(dirname(realpath(__file__)))
docstrings = parse_readme_for_docstrings(join(readme_dir, "README.md"))
pass_config = click.make_pass_decorator(dict)

# Desk-scale profile; the model section falls back to the published hyperparameters.
DEFAULT_CONFIG = {
    "model": {},
    "paths": {"corpus": None, "trees": None, "out": "paths.tsv"},
    "train": {"train": None, "dev": None, "trees": None, "dev_trees": None,
              "max_steps": 2000, "eval_every": 100, "seed": 0, "word_budget": 4096,
              "checkpoint": "checkpoint", "log": "train.log", "workers": 1},
    "predict": {"model": "checkpoint", "corpus": None, "out": "predicted.conll", "trees": None, "workers": 1},
    "score": {"gold": None, "pred": None, "exclude_pred_sense": True},
    "inspect": {"model": "checkpoint", "corpus": None, "sentence": 0, "predicate": None,
                "layer": 1, "head": 0, "trees": None, "out": None},
    "tree_quality": {"corpus": None},
}


def load_config(fname):

    config = copy.deepcopy(DEFAULT_CONFIG)
    if fname is None:
        fname = "config.yaml"
        if not Path(fname).exists():
            return config

    with open(fname) as f:
        loaded = yaml.safe_load(f) or {}

    for section, values in loaded.items():
        config.setdefault(section, {}).update(values or {})

    return config


class TreeSource(click.ParamType):

    """gold, pred, autodel, or the path of a CoNLL-2009 file holding the trees."""

    name = "trees"

    def convert(self, value, param, ctx):
        if value in TREE_SOURCES or Path(expanduser(value)).is_file():
            return value
        self.fail(f"{value!r} is neither one of {', '.join(TREE_SOURCES)} nor an existing file", param, ctx)


def override(config, section, **flags):
    for key, value in flags.items():
        if value is not None and value != ():
            config[section][key] = value


def require(config, section, *keys):
    for key in keys:
        if config[section].get(key) in (None, ""):
            flag = "--" + key.replace("_", "-")
            raise click.UsageError(f"`{flag}` is required (or set `{section}: {key}` in the config file).")


def run(main, config):
    try:
        return main(config)
    except (SrlError, OSError) as e:
        raise click.ClickException(str(e))


def checked_model_config(config, mode, reprs):

    model = dict(config.get("model") or {})
    if mode is not None:
        model["mode"] = mode
    if reprs:
        model["representation"] = list(reprs)
    try:
        model_config = ModelConfig.from_dict(model).validate()
    except ConfigError as e:
        raise click.UsageError(str(e))
    config["model"] = model
    return model_config


mode_option = click.option("--mode", type=click.Choice(MODES), help="How syntax enters the encoder.")
repr_option = click.option("--repr", "reprs", type=click.Choice(REPRS), multiple=True,
                           help="Syntactic representation; repeat for several.")
trees_option = click.option("--trees", type=TreeSource(), help="Tree source: gold, pred, autodel or a file.")


@click.group()
@click.option('--config', type=click.Path(exists=True, dir_okay=False),
              help='The config file to use instead of the default `config.yaml`.')
@click.option('--verbose', is_flag=True, help='Log debug messages.')
@click.pass_context
def cli(ctx, config, verbose):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = load_config(config)


@cli.command("print-config")
@pass_config
@docstring_parameter(docstrings.get("print-config", ""))
def print_config(config):
    """
    {0}
    """
    print("")
    pprint(config)
    print("")


@cli.command("paths")
@click.option("--corpus", type=click.Path(dir_okay=False), help="CoNLL-2009 corpus.")
@trees_option
@click.option("--out", type=click.Path(dir_okay=False), help="Output TSV.")
@pass_config
@docstring_parameter(docstrings.get("paths", ""))
def cmd_paths(config, corpus, trees, out):
    """
    {0}
    """
    from srltools import syntax_features
    override(config, "paths", corpus=corpus, trees=trees, out=out)
    require(config, "paths", "corpus", "trees", "out")
    click.echo("\nComputing path features ...")
    n_records = run(syntax_features.main, config)
    click.echo(f"{n_records} records")


@cli.command("train")
@click.option("--train", "train_path", type=click.Path(dir_okay=False), help="Training corpus.")
@click.option("--dev", type=click.Path(dir_okay=False), help="Development corpus for model selection.")
@trees_option
@click.option("--dev-trees", type=TreeSource(), help="Tree source for the dev corpus.")
@mode_option
@repr_option
@click.option("--seed", type=int, help="Seed of every random draw.")
@click.option("--max-steps", type=int)
@click.option("--eval-every", type=int)
@click.option("--word-budget", type=int)
@click.option("--checkpoint", type=click.Path(file_okay=False), help="Checkpoint directory.")
@click.option("--log", type=click.Path(dir_okay=False), help="Metric log file.")
@click.option("--workers", type=int, help="Threads for dev prediction.")
@pass_config
@docstring_parameter(docstrings.get("train", ""))
def cmd_train(config, train_path, dev, trees, dev_trees, mode, reprs, seed, max_steps, eval_every,
              word_budget, checkpoint, log, workers):
    """
    {0}
    """
    from srltools import training
    override(config, "train", train=train_path, dev=dev, trees=trees, dev_trees=dev_trees, seed=seed,
             max_steps=max_steps, eval_every=eval_every, word_budget=word_budget,
             checkpoint=checkpoint, log=log, workers=workers)
    require(config, "train", "train")
    model_config = checked_model_config(config, mode, reprs)
    if model_config.mode != "none":
        require(config, "train", "trees")
    try:
        training.check_tree_source(model_config, config["train"].get("trees") or "gold")
    except ConfigError as e:
        raise click.UsageError(str(e))

    click.echo("\nTraining ...")
    trainer = run(training.main, config)
    click.echo(f"{trainer.step_count} steps; checkpoint in {config['train']['checkpoint']}")


@cli.command("predict")
@click.option("--model", type=click.Path(file_okay=False), help="Checkpoint directory.")
@click.option("--corpus", type=click.Path(dir_okay=False), help="CoNLL-2009 corpus to label.")
@click.option("--out", type=click.Path(dir_okay=False), help="Output corpus.")
@trees_option
@click.option("--workers", type=int, help="Threads for prediction.")
@pass_config
@docstring_parameter(docstrings.get("predict", ""))
def cmd_predict(config, model, corpus, out, trees, workers):
    """
    {0}
    """
    from srltools import predict
    override(config, "predict", model=model, corpus=corpus, out=out, trees=trees, workers=workers)
    require(config, "predict", "model", "corpus", "out")

    model_dir = expanduser(config["predict"]["model"])
    try:
        model_config, _ = read_model_config(model_dir)
    except (SrlError, OSError) as e:
        raise click.ClickException(f"cannot read the checkpoint in {model_dir}: {e}")
    if predict.needs_trees(model_config):
        require(config, "predict", "trees")

    click.echo("\nPredicting ...")
    run(predict.main, config)


@cli.command("score")
@click.option("--gold", type=click.Path(dir_okay=False), help="Gold corpus.")
@click.option("--pred", type=click.Path(dir_okay=False), help="Predicted corpus.")
@click.option("--with-sense", is_flag=True, default=None, help="Count predicate senses as arcs.")
@pass_config
@docstring_parameter(docstrings.get("score", ""))
def cmd_score(config, gold, pred, with_sense):
    """
    {0}
    """
    from srltools import conll_corpus
    override(config, "score", gold=gold, pred=pred)
    if with_sense:
        config["score"]["exclude_pred_sense"] = False
    require(config, "score", "gold", "pred")
    run(conll_corpus.main, config)


@cli.command("inspect")
@click.option("--model", type=click.Path(file_okay=False), help="Checkpoint directory.")
@click.option("--corpus", type=click.Path(dir_okay=False), help="CoNLL-2009 corpus.")
@click.option("--sentence", type=int, help="0-based sentence index.")
@click.option("--predicate", type=int, help="Predicate token id; the first predicate by default.")
@click.option("--layer", type=int, help="1-based block.")
@click.option("--head", type=int, help="0-based head.")
@trees_option
@click.option("--out", type=click.Path(dir_okay=False), help="Full-precision TSV dump.")
@pass_config
@docstring_parameter(docstrings.get("inspect", ""))
def cmd_inspect(config, model, corpus, sentence, predicate, layer, head, trees, out):
    """
    {0}
    """
    from srltools import inspect_attention
    override(config, "inspect", model=model, corpus=corpus, sentence=sentence, predicate=predicate,
             layer=layer, head=head, trees=trees, out=out)
    require(config, "inspect", "model", "corpus", "layer", "head")
    run(inspect_attention.main, config)


@cli.command("tree-quality")
@click.option("--corpus", type=click.Path(dir_okay=False), help="CoNLL-2009 corpus with both tree columns.")
@pass_config
@docstring_parameter(docstrings.get("tree-quality", ""))
def cmd_tree_quality(config, corpus):
    """
    {0}
    """
    from srltools import conll_corpus
    override(config, "tree_quality", corpus=corpus)
    require(config, "tree_quality", "corpus")
    run(conll_corpus.tree_quality_main, config)


if __name__ == "__main__":
    cli()
