fn main() {
    ldcnet::cli::main()
}
