use clap::Parser;
use ori_server::{ServerConfig, ServerHandle};

#[derive(Parser)]
#[command(name = "ori-server", about = "Shard registry with cross-shard commit validation")]
struct Cli {
    #[command(flatten)]
    server: ServerConfig,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    let handle = ServerHandle::start(&cli.server)?;
    println!("listening on {}", handle.addr());
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(tokio::signal::ctrl_c())?;
    handle.stop()?;
    Ok(())
}
