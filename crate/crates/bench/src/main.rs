use irsmc::sampling::Multinomial;

fn main() {
    std::process::exit(irsmc_bench::cli::run_with(
        std::env::args_os(),
        &Multinomial,
    ));
}
