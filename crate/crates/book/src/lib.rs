//! Runs the code blocks of the guide in `book/src` as doctests. Each chapter
//! gets its own module so a failure points at the chapter it came from.

macro_rules! chapters {
    ($($name:ident => $file:literal),* $(,)?) => {
        $(
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub mod $name {}
        )*
    };
}

chapters! {
    introduction => "introduction.md",
    coreir => "coreir.md",
    behaviors => "behaviors.md",
    runtime => "runtime.md",
    monitor => "monitor.md",
    compilation => "compilation.md",
    deoptimization => "deoptimization.md",
    native => "native.md",
    testing => "testing.md",
    cli => "cli.md",
}
