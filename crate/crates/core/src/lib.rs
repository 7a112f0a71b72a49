pub mod client;
pub mod cloud;
pub mod cli;
pub mod codec;
pub mod gateway;
pub mod http;
pub mod live;
pub mod scenario;
pub mod script;
pub mod sim;
