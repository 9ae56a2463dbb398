from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app.config import configure_logging
from app.routers import simulation

configure_logging()

app = FastAPI(
    title="RIS Opportunistic Rate Splitting Simulator",
    description="Pilot accounting, ORS ratio and seeded single-drop simulation of RIS-assisted two-user downlink",
    version="1.0.0"
)

# Configure CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(simulation.router, prefix="/simulation", tags=["simulation"])


@app.get("/")
def read_root():
    """Service banner."""
    return {"message": "Welcome to the RIS Opportunistic Rate Splitting Simulator"}


@app.get("/health")
def health_check():
    """Health check endpoint for monitoring."""
    return {"status": "healthy"}
