use std::process::ExitCode;

#[tokio::main]
async fn main() -> ExitCode {
    let config = match atb_service::Config::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("atb-service: {e}");
            return ExitCode::FAILURE;
        }
    };
    match atb_service::serve(config).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("atb-service: {e}");
            ExitCode::FAILURE
        }
    }
}
