fn main() {
    eprintln!("wipin: command-line interface under construction");
    std::process::exit(2);
}
