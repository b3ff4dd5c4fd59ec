fn main() {
    std::process::exit(plugin_mdp::run_cli());
}
