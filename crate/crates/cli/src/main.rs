fn main() {
    println!("rrl");
}
