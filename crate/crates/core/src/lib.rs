pub mod bloomfwd;
pub mod ccn;
pub mod gf256;
pub mod nc3n;
pub mod rlnc;
pub mod sim;
