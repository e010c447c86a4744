mod data;
mod lifecycle;
mod models;
mod report;

use crate::args::{Cli, Command};

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Init => data::init(cli),
        Command::Synth(a) => data::synth(cli, a),
        Command::Prepare(a) => data::prepare(cli, a),
        Command::Train(a) => models::train(cli, a),
        Command::Tune(a) => models::tune(cli, a),
        Command::Evaluate(a) => models::evaluate(cli, a),
        Command::Abtest(a) => models::abtest(cli, a),
        Command::Infer(a) => models::infer(cli, a),
        Command::Pipeline { command } => lifecycle::pipeline(cli, command),
        Command::Registry { command } => lifecycle::registry(cli, command),
        Command::Report(a) => report::report(cli, a),
    }
}
