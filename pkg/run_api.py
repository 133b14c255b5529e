import os

from api import create_app

app = create_app()

if __name__ == "__main__":
    # модель держится в памяти процесса, поэтому сервер однопроцессный
    app.run(
        host=os.environ.get("G3DK_HOST", "0.0.0.0"),
        port=int(os.environ.get("G3DK_PORT", "10000")),
        single_process=True,
    )
